#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_dlist_find_path3_empty_list(void)
{
    struct dlist *l = dlist_create();
    TEST_ASSERT_NULL(dlist_find(l, 1));
    dlist_destroy(l);
}
