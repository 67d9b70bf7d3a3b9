#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_pop_front_path3_discard_with_successor(void)
{
    struct dlist *l = dlist_create();
    dlist_push_back(l, 1);
    dlist_push_back(l, 2);
    TEST_ASSERT_EQUAL_INT(0, dlist_pop_front(l, NULL));
    TEST_ASSERT_EQUAL_INT(2, l->head->value);
    dlist_destroy(l);
}
