#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_pop_front_path2_last_node(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 4);
    int v = 0;
    TEST_ASSERT_EQUAL_INT(0, dlist_pop_front(l, &v));
    TEST_ASSERT_EQUAL_INT(4, v);
    TEST_ASSERT_NULL(l->tail);
    dlist_destroy(l);
}
