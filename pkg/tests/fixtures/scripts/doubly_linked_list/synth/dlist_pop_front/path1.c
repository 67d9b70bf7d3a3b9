#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_pop_front_path1_value_and_successor(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 1);
    dlist_push_back(l, 2);
    int v = 0;
    TEST_ASSERT_EQUAL_INT(0, dlist_pop_front(l, &v));
    TEST_ASSERT_EQUAL_INT(1, v);
    TEST_ASSERT_NULL(l->head->prev);
    TEST_ASSERT_EQUAL_size_t(1, l->length);
    dlist_destroy(l);
}
